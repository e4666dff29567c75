from __future__ import annotations

from varjet.config import get_config
from varjet.job_runner import SampleRunner

config = get_config()
sample_runner = SampleRunner(max_workers=config.workers)
