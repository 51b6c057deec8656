"""Package init for tests."""
