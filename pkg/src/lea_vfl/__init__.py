"""Label enumeration attacks against simulated vertical federated learning."""
__version__ = "0.1.0"
