"""Grid discretization of the Finsler p-Dirichlet energy and exact radial oracles."""
