# Model adapters for the PED engine
