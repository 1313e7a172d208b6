"""
Experiment harness: run logs, cumulative pass rates, per-domain reports and
the `dream` command line.

The main public entrypoints are:
- `evaluation.runner.run_experiment`
- `evaluation.metrics.cumulative_pass_rate`
- `evaluation.metrics.aggregate_by_domain`
- `python -m evaluation.cli`
"""
