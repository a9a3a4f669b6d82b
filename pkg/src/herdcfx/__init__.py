"""herdcfx: sub-clinical mastitis risk prediction with actionable
counterfactual explanations."""

__version__ = "0.1.0"
