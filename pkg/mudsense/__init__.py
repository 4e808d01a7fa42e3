"""
Proprioceptive mud sensing and adaptive crunching-gait simulator
"""

__version__ = "1.0.0"
__author__ = "Mudsense Team"
