"""HTTP job service around the detection pipeline."""
