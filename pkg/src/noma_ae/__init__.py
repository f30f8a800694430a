"""End-to-end autoencoder NOMA over Rayleigh fading."""
