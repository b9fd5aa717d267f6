"""The mask prediction network: locate a query frame's corruption from a completed neighbor."""

import torch
import torch.nn as nn

from .layers import FrameEncoder, MaskDecoder, pad_to_multiple, unpad


def straight_through_binarize(soft, threshold=0.5):
    """Hard threshold in the forward pass, identity gradient in the backward."""
    hard = (soft >= threshold).to(soft.dtype)
    return soft + (hard - soft).detach()


class MaskPredictionNetwork(nn.Module):
    """Predict the query frame's corruption mask.

    The completed neighbor and the query frame are encoded by this network's
    own encoder; the completed frame's feature is enriched with the aggregated
    feature from the completion pass, aligned to the query feature by the
    *shared* alignment module (the very nn.Module owned by the completion
    network, referenced without re-registration so its parameters are stored
    once), and decoded to a full-resolution soft mask.
    """

    def __init__(self, channels, alignment):
        super().__init__()
        self.channels = channels
        self.encoder = FrameEncoder(channels)
        self.project = nn.Conv2d(2 * channels, channels, 1)
        self.decoder = MaskDecoder(channels)
        self._shared_alignment = (alignment,)  # tuple dodges Module registration

    @property
    def alignment(self):
        return self._shared_alignment[0]

    def forward(self, query, completed, completed_feat):
        if completed_feat is None:
            raise ValueError("completed_feat is required; thread it from the completion pass")
        if query.shape != completed.shape:
            raise ValueError(
                f"query {tuple(query.shape)} and completed {tuple(completed.shape)} differ"
            )
        query_p, size = pad_to_multiple(query)
        completed_p, _ = pad_to_multiple(completed)
        f_q = self.encoder(query_p)
        g = self.encoder(completed_p)
        if completed_feat.shape != g.shape:
            raise ValueError(
                f"completed_feat {tuple(completed_feat.shape)} does not match "
                f"encoder output {tuple(g.shape)}"
            )
        q_hat = self.project(torch.cat([g, completed_feat], dim=1))
        q_aligned = self.alignment(q_hat, f_q)
        soft = self.decoder(torch.cat([q_aligned, f_q], dim=1))
        return unpad(soft, size)
