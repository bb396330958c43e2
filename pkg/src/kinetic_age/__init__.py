"""Kinetic age estimation from infant skeleton sequences.

Predicts developmental ("kinetic") age from 2D/3D pose time series with
adaptive spatio-temporal graph convolutional networks, alongside a classical
kinematic-feature baseline, cross-validated training, and growth-chart
analysis of the resulting kinetic-age index.
"""

__version__ = "0.1.0"
