"""BLPP Lab: grid-exact semi-discrete Brownian last-passage percolation."""
