# PEDF/PEDL dumps, PEDN checkpoints and JSON/CSV reports
