import logging

from cli.messages import msgs_evaluate
from cli.run_config import ARMS
from cli.workspace import EVAL_DIR, RECON_DIR, Workspace, arm_dir
from errors import MissingInputError
from metrics import (AGGREGATE_COLUMNS, COLUMNS, MetricsReport, dice, feature_hallucination_score,
                     measurement_loss, psnr, ssim, threshold_segment)
from phantoms.generator import LESION_THRESHOLD
from storage import read_image


logger = logging.getLogger("cli")

SUMMARY_COLUMNS = ["arm", "psnr", "ssim", "meas_loss", "dice", "feat_score"]


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("evaluate", parents=[common], help="score reconstructions against the held-out truth")
    parser.add_argument("--arms", default=None,
                        help="comma-separated arms to score (default: every arm under recon/)")
    parser.set_defaults(handler=handle)


def _arms(args, ws: Workspace) -> list[str]:
    if args.arms:
        return [arm.strip() for arm in args.arms.split(",") if arm.strip()]
    found = [arm for arm in ARMS if (ws.out / RECON_DIR / arm_dir(arm)).is_dir()]
    if not found:
        raise MissingInputError(f"no reconstructions under {ws.out / RECON_DIR}")
    return found


def score_arm(ws: Workspace, arm: str, pairs, op, encoders) -> MetricsReport:
    recon_dir = ws.out / RECON_DIR / arm_dir(arm)
    patch = ws.cfg.patch_size
    tileable = ws.cfg.height % patch == 0 and ws.cfg.width % patch == 0
    report = MetricsReport()
    for name, pair in pairs:
        recon = read_image(recon_dir / f"{name}_recon.mpimg")
        truth = pair.target
        lesion = pair.lesion_mask.pixels
        # Dice only where there is a lesion to find
        lesion_dice = dice(threshold_segment(recon, *LESION_THRESHOLD), lesion) if lesion.any() else None
        feat = feature_hallucination_score(encoders, recon, truth, patch) if encoders and tileable else None
        report.add(name, psnr(recon, truth), ssim(recon, truth),
                   measurement_loss(op, recon, ws.read_measurement(name)), lesion_dice, feat)
    return report


def handle(args, ws: Workspace) -> None:
    pairs = ws.dataset("test")
    op = ws.operator()
    encoders = ws.encoders() if ws.has_encoders() else None
    summary = []
    for arm in _arms(args, ws):
        if not (ws.out / RECON_DIR / arm_dir(arm)).is_dir():
            raise MissingInputError(msgs_evaluate['missing_arm'].format(arm=arm))
        recon_dir = ws.out / RECON_DIR / arm_dir(arm)
        # an arm may have been reconstructed with --limit
        scored = [(name, pair) for name, pair in pairs if (recon_dir / f"{name}_recon.mpimg").is_file()]
        if not scored:
            raise MissingInputError(msgs_evaluate['missing_arm'].format(arm=arm))
        report = score_arm(ws, arm, scored, op, encoders)

        store = ws.store(EVAL_DIR, arm_dir(arm))
        store.write_csv("per_image.csv", COLUMNS, report.rows)
        store.write_csv("aggregate.csv", AGGREGATE_COLUMNS, report.aggregate())
        summary.append({"arm": arm} | {column: report.mean(column) for column in SUMMARY_COLUMNS[1:]})
        logger.info(msgs_evaluate['arm'].format(arm=arm, psnr=report.mean("psnr"), ssim=report.mean("ssim"),
                                                meas_loss=report.mean("meas_loss")))
    ws.store(EVAL_DIR).write_csv("summary.csv", SUMMARY_COLUMNS, summary)
