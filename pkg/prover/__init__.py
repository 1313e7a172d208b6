"""
DREAM prover package.

Proves first-order theorems stated in Lean 4 with a generative model in the
loop:
- an axiom tree whose leaves seed diversified proof strategies,
- sub-proposition error feedback over the failure history,
- the Lean checker (or a rule-based mock) as the judge,
- a LangGraph revision loop tying them together.

The main public entrypoints are:
- `prover.orchestrator.prove_theorem`
- `prover.orchestrator.sample_repeatedly`
- `prover.config.load_settings`
"""
