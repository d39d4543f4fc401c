"""Compiler pass-sequence auto-tuning: synergy-seeded candidates, contrastive
program embeddings, cluster-specific evolutionary coresets and test-time
selection with refinements."""

__version__ = "0.1.0"
