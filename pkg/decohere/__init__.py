# --------------------------------------------------------
# decohere: dephasing fragility of correlations and coherence
# --------------------------------------------------------
