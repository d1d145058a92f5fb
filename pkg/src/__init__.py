"""Residual-network surrogates for PDEs with random coefficients - core modules."""
