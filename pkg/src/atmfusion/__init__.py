"""Out-of-service detection for ATM fleets.

Simulates fleet telemetry (failures, transactions, a noisy status channel),
derives ground truth from event journals, extracts gap-statistics features,
rebalances rare outage labels, and fuses several classifiers into a single
detector with standard evaluation reports.
"""

__version__ = "0.1.0"
