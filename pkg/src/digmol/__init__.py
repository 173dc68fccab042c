"""Dual-interaction graph contrastive learning for molecular property prediction.

SMILES strings become directed heavy-atom graphs, pairs of corrupted views
are encoded by an online network and a momentum-tracked target network, and
the online encoder is then frozen under a small prediction head.
"""

from .augment import AugmentConfig, make_pair
from .contrastive import LossWeights, joint_loss, nt_xent
from .encoder import EncoderConfig, encode, encode_batch, init_encoder
from .graph import MolGraph, degrees, transitions
from .metrics import mae, prc_auc, rmse, roc_auc, random_split, scaffold_split
from .momentum import NetworkPair, init_pair, momentum_update
from .smiles import extract_scaffold, parse_smiles
from .trainer import Checkpoint, FinetuneConfig, PretrainConfig, finetune, predict, pretrain

__version__ = "0.1.0"
