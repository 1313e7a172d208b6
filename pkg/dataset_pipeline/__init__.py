# TPTP -> Lean 4 dataset construction: parse, translate, post-process, optimize, manifest.
