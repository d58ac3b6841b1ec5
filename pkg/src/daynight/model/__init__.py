"""
The segmentation network, its binary checkpoint format and source training.
"""
