"""Harvested-energy features for bearing fault diagnosis.

Vibration traces drive modeled piezoelectric harvesters (resistive load or
rectifier plus storage capacitor); the harvested energy is the only feature
handed to the classifiers and the anomaly detector.
"""

__version__ = "0.1.0"
