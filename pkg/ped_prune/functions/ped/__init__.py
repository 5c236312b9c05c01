# PED stage engine
