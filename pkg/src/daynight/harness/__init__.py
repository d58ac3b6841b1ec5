"""
Deployment orchestration, metrics, persistence and the invariant suite.
"""
