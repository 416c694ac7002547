#!/usr/bin/env python3
import pytest

# Define the list of tests
tests_list = ["test_risk_model.py", "test_chain_sim.py", "test_pool_model.py", "test_sweeps.py", "test_cli.py"]

# Run pytest when the python script is executed
pytest.main(tests_list)
