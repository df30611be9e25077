"""
Volume I/O, anatomical views, samples, phantoms and subject-level folds.

Date: 2024-03-16
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

from volume_data.volume import Volume, load_volume, save_volume, import_raw, header_path, VOLUME_DTYPES
from volume_data.views import (ViewPlan, view_plan, normalize_intensity, view_array, restack_view, slice_view,
    pad_to_multiple, padded_shape, crop_to)
from volume_data.samples import (SubjectView, Sample, subject_view, make_samples, sample_count, kfold_split,
    write_subjects_manifest, load_subjects)
from volume_data.phantom import PhantomConfig, synth_phantom, INTENSITY_BANDS, SHELL_RADII
