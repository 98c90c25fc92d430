# This file makes Python treat the 'tests' directory as a package. 