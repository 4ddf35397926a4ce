"""Detection-directed sparse recovery (BHT-BP)."""
