"""
Test suites for the osculating calculus toolkit
"""
