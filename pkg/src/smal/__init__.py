"""smal: sequence-based state recognition and apprenticeship learning.

Learns world states from sequences of multimodal observations via a
structured-sparse solver, learns an MDP (actions, transitions, reward) from
expert demonstrations, and executes the learned policy in a deterministic
grid-world search-and-rescue simulator.
"""

__version__ = "0.1.0"
