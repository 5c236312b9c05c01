# Energy distance and energy dependence
