"""Order-theoretic audits of recurrent and limit behaviour in competitive flows."""

__version__ = "0.1.0"
