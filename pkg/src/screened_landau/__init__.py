"""Linearized and nonlinear screened Vlasov dynamics near a stable equilibrium."""
