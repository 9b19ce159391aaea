import logging

from cli.messages import msgs_reconstruct
from cli.run_config import ARMS
from cli.workspace import RECON_DIR, Workspace, arm_dir
from errors import ConfigError
from operators.degradation import baseline_reconstruction
from sampler import GuidanceContext, reconstruct


logger = logging.getLogger("cli")

DIAGNOSTIC_FIELDS = ["candidate", "t", "dc_loss", "pamri_loss", "grad_norm"]


def parse_arms(value: str) -> list[str]:
    arms = [arm.strip() for arm in value.split(",") if arm.strip()]
    unknown = [arm for arm in arms if arm not in ARMS]
    if not arms or unknown:
        raise ConfigError(f"--ablate: unknown arm(s) {unknown or value!r} (expected {', '.join(ARMS)})")
    return list(dict.fromkeys(arms))


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("reconstruct", parents=[common], help="guided reconstruction of the test measurements")
    parser.add_argument("--ablate", default="full",
                        help=f"comma-separated arms, one reconstruction each ({', '.join(ARMS)})")
    parser.add_argument("--limit", type=int, default=None, help="only the first N test images")
    parser.set_defaults(handler=handle)


def handle(args, ws: Workspace) -> None:
    arms = parse_arms(args.ablate)
    pairs = ws.dataset("test")[:args.limit]
    op = ws.operator()
    measurements = ws.measure(op, pairs)

    configs = {arm: ws.cfg.guidance_config(arm, workers=ws.threads) for arm in arms if arm != "baseline"}
    model = ws.prior_model() if configs else None
    encoders = ws.encoders() if any(cfg.lambda_p > 0 for cfg in configs.values()) else None

    for arm in arms:
        store = ws.store(RECON_DIR, arm_dir(arm))
        logger.info(msgs_reconstruct['arm'].format(arm=arm, count=len(pairs)))
        seeds = []
        for name, pair in pairs:
            y = measurements[name]
            baseline = baseline_reconstruction(op, y).pixels
            if arm == "baseline":
                image, diagnostics, seed_index, score = baseline, [], "", ""
            else:
                ctx = GuidanceContext(op, y, x_aux=pair.aux, encoders=encoders)
                result = reconstruct(model, ctx, configs[arm])
                image, diagnostics, seed_index = result.image.pixels, result.diagnostics, result.seed_index
                score = min(result.scores)
                store.write_csv(f"{name}_diagnostics.csv", DIAGNOSTIC_FIELDS, diagnostics)
                logger.debug(msgs_reconstruct['image'].format(arm=arm, image_id=name, seed_index=seed_index))
            store.write_image(f"{name}_recon.mpimg", image, kind="reconstruction")
            store.write_panel(f"panels/{name}.pgm", [pair.target.pixels, baseline, image, pair.aux.pixels])
            seeds.append({"id": name, "seed_index": seed_index, "score": score})
        store.write_csv("seeds.csv", ["id", "seed_index", "score"], seeds)
