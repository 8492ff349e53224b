"""Raw video patches to codebook assignments with multiclass boosted trees and early exit."""

__version__ = "0.1.0"
