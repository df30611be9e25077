"""
Common package aims to provide non-specific functionality needed across
multiple packages. It comprises YAML configuration loading, common defines,
exceptions, seed derivation and logging setup.

Date: 2024-03-04
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""
