"""engageopt: engagement-optimized subject line selection.

Learns user content preferences from A/B click logs, trains pointwise and
pairwise reward models, and serves the best-of-N subject line with a
single-flight cache, retry/fallback hardening, and drift monitoring.
"""

__version__ = "0.1.0"
