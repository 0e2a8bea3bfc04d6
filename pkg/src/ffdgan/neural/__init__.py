"""Numpy autodiff tape, dense FFD-GAN networks and WGAN-GP training."""
