# wallscale modules
# Micromagnetic wall-energy laboratory: fields, energy, constructions, relaxation, bounds, sweeps

__version__ = '1.0.0'
