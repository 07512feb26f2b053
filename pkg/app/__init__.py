"""
MIA Shield
Membership-inference defenses (Split-AI, self-distillation) and the attacks that test them
"""

__version__ = "1.0.0"
