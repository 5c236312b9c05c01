# Functions module
