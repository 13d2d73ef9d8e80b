# Carnot Lab
# Numerical toolkit and estimate-verification engine for analysis on the Heisenberg group

__version__ = "1.0.0"
__author__ = "Carnot Lab Team"
