# Version number is automatically set via bumpversion.
# DO NOT MODIFY:
VERSION = "0.1.0"
