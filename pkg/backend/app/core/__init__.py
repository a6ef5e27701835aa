# Settings, logging and the error hierarchy
