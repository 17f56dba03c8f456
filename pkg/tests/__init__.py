"""Test package for the tractor-trailer navigation stack."""
