"""Time-optimal W -> GHZ conversion for three Rydberg-atom qubits."""

__version__ = "0.1.0"
