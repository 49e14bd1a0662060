"""BlockReduce: a three-level merge-mined blockchain hierarchy, with a
discrete-event network simulator for its bandwidth and consensus behavior."""

__version__ = "0.1.0"
