"""Lyapunov feedback control of a particle in a decaying potential."""
