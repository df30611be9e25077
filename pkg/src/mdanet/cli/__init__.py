"""
Command-line surface of mdanet: argument parsing, subcommand implementations
and the gradient verification suites.

Date: 2024-03-20
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""
