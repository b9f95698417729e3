# Run configuration, scenario building and environment settings
