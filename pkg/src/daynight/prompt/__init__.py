"""
Low-frequency prompts and the memory bank that initializes them.
"""
