"""FFD-GAN: learned wing-shape parameterization with a free-form deformation output layer."""

__version__ = "0.1.0"
