import logging

from cli.messages import msgs_gen_data, msgs_run
from cli.workspace import DATA_DIR, MANIFEST_FIELDS, Workspace, image_id
from errors import ArtifactExistsError
from phantoms import sample_dataset


logger = logging.getLogger("cli")

NAME = "gen-data"


def register(subparsers, common) -> None:
    parser = subparsers.add_parser(NAME, parents=[common], help="render train/test phantom pairs and the manifest")
    parser.set_defaults(handler=handle)


def handle(args, ws: Workspace) -> None:
    cfg = ws.cfg
    data_dir = ws.out / DATA_DIR
    if data_dir.is_dir() and any(data_dir.iterdir()) and not ws.force:
        raise ArtifactExistsError(msgs_run['dir_not_empty'].format(path=data_dir))

    splits = {
        "train": sample_dataset(cfg.n_train, cfg.height, cfg.width, cfg.lesion_prob, seed=cfg.seed),
        "test": sample_dataset(cfg.n_test, cfg.height, cfg.width, cfg.lesion_prob, seed=cfg.seed + 1),
    }
    store = ws.store(DATA_DIR)
    manifest = []
    for split, pairs in splits.items():
        for index, pair in enumerate(pairs):
            name = image_id(split, index)
            files = {kind: f"{split}/{name}_{kind}.mpimg" for kind in ("target", "aux", "mask")}
            store.write_image(files["target"], pair.target.pixels, kind="image")
            store.write_image(files["aux"], pair.aux.pixels, kind="image")
            store.write_image(files["mask"], pair.lesion_mask.pixels, kind="mask")
            manifest.append({"id": name, "split": split, **files,
                             "lesion_pixels": int(pair.lesion_mask.pixels.sum())})
    store.write_csv("manifest.csv", MANIFEST_FIELDS, manifest)
    logger.info(msgs_gen_data['written'].format(n_train=cfg.n_train, n_test=cfg.n_test,
                                                height=cfg.height, width=cfg.width))
