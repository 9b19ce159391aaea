from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from slugify import slugify

from cli.messages import msgs_run
from cli.run_config import RESOLVED_NAME, RunConfig
from errors import ConfigError, MissingInputError
from flow.velocity import VelocityNetwork, load_velocity_model
from operators.degradation import (ForwardOperator, KSpaceMask, Measurement, add_noise, apply, make_operator,
                                   measurement_from_tensors, measurement_to_tensors)
from pamri.encoders import EncoderPair
from phantoms.image import ImagePair
from storage import ArtifactStore, read_csv, read_image, read_weights


"""
Directory layout of one run and the loaders shared by the subcommand handlers:

    <output_dir>/resolved_config.env
                 data/manifest.csv, data/<split>/<id>_{target,aux,mask}.mpimg
                 prior/prior.mpfw, prior/prior_log.csv
                 pamri/encoders.mpfw, pamri/decoders.mpfw, pamri/pamri_log.csv
                 measurements/<id>.mpfw (and mask.mpimg for k-space)
                 recon/<arm>/<id>_recon.mpimg, <id>_diagnostics.csv, seeds.csv, panels/<id>.pgm
                 eval/<arm>/per_image.csv, eval/<arm>/aggregate.csv, eval/summary.csv
                 verify/oracle_checks.csv
"""


logger = logging.getLogger("cli")

DATA_DIR = "data"
PRIOR_DIR = "prior"
PAMRI_DIR = "pamri"
MEASUREMENT_DIR = "measurements"
RECON_DIR = "recon"
EVAL_DIR = "eval"
VERIFY_DIR = "verify"
MANIFEST_FIELDS = ["id", "split", "target", "aux", "mask", "lesion_pixels"]


def image_id(split: str, index: int) -> str:
    return slugify(f"{split}-{index:04d}")


def arm_dir(arm: str) -> str:
    return slugify(arm)


@dataclass
class Workspace:
    cfg: RunConfig
    force: bool = False
    registry: object | None = None
    run_id: int | None = None
    threads: int = 1

    @property
    def out(self) -> Path:
        return Path(self.cfg.output_dir)

    def store(self, *parts: str) -> ArtifactStore:
        return ArtifactStore(self.out.joinpath(*parts), self.force, self.registry, self.run_id)

    def write_resolved_config(self) -> None:
        """
        Write resolved_config.env, or leave an identical one in place. A directory created
        with a different configuration is only reused with --force.
        """
        text = self.cfg.resolved_text()
        target = self.out / RESOLVED_NAME
        if target.is_file():
            if target.read_text(encoding="utf-8") == text:
                return
            if not self.force:
                raise ConfigError(msgs_run['config_mismatch'].format(output_dir=self.out))
        self.store().write_text(RESOLVED_NAME, text, kind="config")

    # ===== dataset =====

    def dataset(self, split: str) -> list[tuple[str, ImagePair]]:
        rows = [row for row in read_csv(self.out / DATA_DIR / "manifest.csv") if row["split"] == split]
        if not rows:
            raise MissingInputError(f"no {split} images listed in {self.out / DATA_DIR / 'manifest.csv'}")
        data_dir = self.out / DATA_DIR
        return [(row["id"], ImagePair(read_image(data_dir / row["target"], "target"),
                                      read_image(data_dir / row["aux"], "aux"),
                                      read_image(data_dir / row["mask"], "mask")))
                for row in rows]

    # ===== checkpoints =====

    def prior_model(self) -> VelocityNetwork:
        return load_velocity_model(read_weights(self.out / PRIOR_DIR / "prior.mpfw"))

    def encoders(self) -> EncoderPair:
        return EncoderPair.from_state(read_weights(self.out / PAMRI_DIR / "encoders.mpfw"))

    def has_encoders(self) -> bool:
        return (self.out / PAMRI_DIR / "encoders.mpfw").is_file()

    # ===== degradation =====

    def operator(self) -> ForwardOperator:
        cfg = self.cfg
        return make_operator(cfg.task, (cfg.height, cfg.width), factor=cfg.factor, blur_sigma=cfg.blur_sigma,
                             acceleration=cfg.acceleration, center_fraction=cfg.center_fraction, seed=cfg.seed)

    def measurement_seed(self, index: int) -> int:
        return self.cfg.seed * 1_000_003 + index

    def measure(self, op: ForwardOperator, pairs: list[tuple[str, ImagePair]]) -> dict[str, Measurement]:
        """
        y = F(target) + noise for every test image. Existing measurement files are reused,
        so every ablation arm of every reconstruct call sees the same y.
        """
        store = self.store(MEASUREMENT_DIR)
        if isinstance(op, KSpaceMask) and (self.force or not store.path("mask.mpimg").exists()):
            store.write_image("mask.mpimg", op.mask, kind="mask")
        result = {}
        for index, (name, pair) in enumerate(pairs):
            path = store.path(f"{name}.mpfw")
            if path.exists() and not self.force:
                result[name] = measurement_from_tensors(read_weights(path))
                continue
            y = add_noise(apply(op, pair.target), self.cfg.sigma, seed=self.measurement_seed(index))
            store.write_weights(f"{name}.mpfw", measurement_to_tensors(y))
            result[name] = y
        return result

    def read_measurement(self, name: str) -> Measurement:
        return measurement_from_tensors(read_weights(self.out / MEASUREMENT_DIR / f"{name}.mpfw"))
