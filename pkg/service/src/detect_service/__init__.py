"""Two-stage detect-then-segment microservice with a fixture mode for CI."""

__version__ = "0.1.0"
