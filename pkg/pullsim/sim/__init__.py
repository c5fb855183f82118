"""Discrete-event model of image pulls on Kubernetes worker nodes."""
