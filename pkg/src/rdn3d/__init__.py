"""3D one-shot region detection on volumetric images."""
