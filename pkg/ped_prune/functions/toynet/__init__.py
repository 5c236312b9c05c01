# Toy skip-connection network
