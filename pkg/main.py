#!/usr/bin/env python3
"""
Entry point for the mud sensing simulator CLI
"""

from mudsense.cli import main

if __name__ == '__main__':
    main()
