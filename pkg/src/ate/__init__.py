"""Cross-domain automatic term extraction toolkit.

Pipeline: corpus loading -> gold-to-IOB compilation -> token classification
-> IOB decoding into candidate term sets -> term-level evaluation -> optional
two-model union/intersection ensembling. The `runner` module orchestrates the
whole chain and keeps a reproducible run ledger.
"""

__version__ = "0.1.0"

from ate.errors import AteError, ValidationError, RuntimeFailure  # noqa: F401
