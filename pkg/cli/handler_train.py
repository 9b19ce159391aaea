import logging

from cli.messages import msgs_train
from cli.workspace import PAMRI_DIR, PRIOR_DIR, Workspace
from flow.prior import train_prior
from pamri.pretrain import pretrain_pamri


logger = logging.getLogger("cli")


def register(subparsers, common) -> None:
    parser = subparsers.add_parser("train-prior", parents=[common], help="fit the rectified-flow prior on the training targets")
    parser.set_defaults(handler=handle_prior)
    parser = subparsers.add_parser("pretrain-pamri", parents=[common], help="pretrain the cross-modal patch encoders")
    parser.set_defaults(handler=handle_pamri)


def handle_prior(args, ws: Workspace) -> None:
    targets = [pair.target for _, pair in ws.dataset("train")]
    model = train_prior(targets, ws.cfg.train_config(), store=ws.store(PRIOR_DIR))
    losses = [row["loss"] for row in model.history]
    logger.info(msgs_train['prior_done'].format(first=losses[0], last=losses[-1], iterations=len(losses)))


def handle_pamri(args, ws: Workspace) -> None:
    train = [pair for _, pair in ws.dataset("train")]
    holdout = [pair for _, pair in ws.dataset("test")]
    encoders, _ = pretrain_pamri(train, ws.cfg.ssl_config(), store=ws.store(PAMRI_DIR), holdout=holdout)
    last = encoders.history[-1]
    logger.info(msgs_train['pamri_done'].format(nce=last["nce"], rec=last["rec"], accuracy=last["retrieval_acc"]))
