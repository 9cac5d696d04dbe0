"""Reproduction harness for the published sample-size results."""
