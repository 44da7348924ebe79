"""
Test suite for pipescale.

One test module per package module; every test runs against the mock
policy and never reaches the network.
"""
