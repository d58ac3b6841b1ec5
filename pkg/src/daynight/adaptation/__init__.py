"""
The two halves of a deployment cycle: per-sample prompt adaptation by day
and self-training of the model by night.
"""
