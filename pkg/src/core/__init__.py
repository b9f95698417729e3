# Mechanisms, privacy measurement and the replication launcher
