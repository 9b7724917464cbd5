# labelteach/__init__.py
"""Label synthesis teaching: greedy, theory-driven and learned teachers for SGD learners."""

__version__ = "0.1.0"
