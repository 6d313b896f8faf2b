"""Workload dynamics of bug triage: ingest, rate curves, thresholds, queues, service-time laws, simulation."""

__version__ = "0.1.0"
