"""Synthetic V2I sensing-plus-multipath datasets and cross-modal multipath generation.

Subpackages / modules:

* ``scenegen``    -- parametric street scenes, image-method multipath oracle,
  sensor stand-ins, dataset writer.
* ``encoders``    -- per-modality feature extractors (image patches, point
  clouds, radar points).
* ``fusion``      -- channel-attention fusion of modalities and views.
* ``backbone``    -- decoder-only transformer with low-rank adapters and
  propagation prompts.
* ``heads``       -- task adapters (LoS/NLoS classification, per-path
  power/delay regression) and the composite loss.
* ``trainer``     -- staged training loop, checkpointing, few-shot fine-tuning.
* ``chanstats``   -- PDP, RMS delay spread, FCF, random-phase CIR, Shannon
  capacity.
* ``evalharness`` -- metrics, baselines, generalization and ablation
  protocols.
* ``cli``         -- the ``som-multipath`` command line entry point.
"""

__version__ = "0.1.0"

SPEED_OF_LIGHT = 299_792_458.0  # m/s
