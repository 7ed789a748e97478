"""Reference models the export serializes and evaluates.

These torch modules are the source of truth twice over: their weights become
the graph initializers, and their forward passes produce the golden-fixture
embeddings/probabilities recorded next to the graphs. Exported graphs must
reproduce them (the parity tests check cosine agreement), so every forward
here is written with plain, explicitly-ordered operations that the graph
builders mirror one-to-one.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

# Additive attention-mask fill for disallowed (future) positions. Large
# enough that softmax underflows those entries to exactly zero in float32.
MASKED_SCORE = -1.0e4

# Channel statistics published with the original encoder weights; recorded in
# preprocess.json so evaluation normalizes images identically.
IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)


@dataclass(frozen=True)
class ClipConfig:
    """Shape of the text/image encoder pair."""

    vocab_size: int
    context_length: int
    embed_dim: int
    text_width: int
    text_layers: int
    text_heads: int
    vision_width: int
    vision_layers: int
    vision_heads: int
    image_size: int
    patch_size: int
    mlp_ratio: int = 4

    @property
    def grid_positions(self) -> int:
        side = self.image_size // self.patch_size
        return side * side + 1  # patches plus the class token


def vit_b_32_config(vocab_size: int = 49408) -> ClipConfig:
    """Published ViT-B/32 encoder dimensions."""
    return ClipConfig(
        vocab_size=vocab_size,
        context_length=77,
        embed_dim=512,
        text_width=512,
        text_layers=12,
        text_heads=8,
        vision_width=768,
        vision_layers=12,
        vision_heads=12,
        image_size=224,
        patch_size=32,
    )


def reduced_clip_config(vocab_size: int) -> ClipConfig:
    """Reduced-width configuration for fast, checkpoint-free exports."""
    return ClipConfig(
        vocab_size=vocab_size,
        context_length=64,
        embed_dim=64,
        text_width=64,
        text_layers=2,
        text_heads=4,
        vision_width=64,
        vision_layers=2,
        vision_heads=4,
        image_size=32,
        patch_size=8,
    )


@dataclass(frozen=True)
class ClassifierConfig:
    """Shape of the feature/probability classifier."""

    image_size: int
    conv_channels: tuple[int, ...]
    class_count: int

    @property
    def feature_dim(self) -> int:
        return self.conv_channels[-1]


def full_classifier_config() -> ClassifierConfig:
    return ClassifierConfig(image_size=224, conv_channels=(32, 64, 128, 256), class_count=1000)


def reduced_classifier_config() -> ClassifierConfig:
    return ClassifierConfig(image_size=32, conv_channels=(8, 16), class_count=12)


class QuickGELU(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.sigmoid(1.702 * x)


class SelfAttention(nn.Module):
    """Multi-head attention with separate q/k/v projections.

    Kept hand-rolled (rather than nn.MultiheadAttention) so each arithmetic
    step has a direct graph-node counterpart.
    """

    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise ValueError(f"width {width} not divisible by {heads} heads")
        self.heads = heads
        self.scale = (width // heads) ** -0.5
        self.q_proj = nn.Linear(width, width)
        self.k_proj = nn.Linear(width, width)
        self.v_proj = nn.Linear(width, width)
        self.out_proj = nn.Linear(width, width)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        batch, tokens, width = x.shape

        def heads(y: torch.Tensor) -> torch.Tensor:
            return y.view(batch, tokens, self.heads, -1).permute(0, 2, 1, 3)

        q = heads(self.q_proj(x))
        k = heads(self.k_proj(x))
        v = heads(self.v_proj(x))
        scores = (q @ k.permute(0, 1, 3, 2)) * self.scale
        if mask is not None:
            scores = scores + mask
        mixed = torch.softmax(scores, dim=-1) @ v
        merged = mixed.permute(0, 2, 1, 3).reshape(batch, tokens, width)
        return self.out_proj(merged)


class TransformerBlock(nn.Module):
    def __init__(self, width: int, heads: int, mlp_ratio: int):
        super().__init__()
        self.ln_1 = nn.LayerNorm(width)
        self.attn = SelfAttention(width, heads)
        self.ln_2 = nn.LayerNorm(width)
        self.fc1 = nn.Linear(width, mlp_ratio * width)
        self.gelu = QuickGELU()
        self.fc2 = nn.Linear(mlp_ratio * width, width)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.ln_1(x), mask)
        return x + self.fc2(self.gelu(self.fc1(self.ln_2(x))))


class TextEncoder(nn.Module):
    """Token transformer pooled at caller-marked positions.

    forward(tokens, pool_weights): tokens is int64 [batch, context];
    pool_weights is float [batch, context], normally one-hot on each row's
    end-of-text position. Returns unnormalized embeddings [batch, embed_dim].
    """

    def __init__(self, config: ClipConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.text_width)
        self.positional_embedding = nn.Parameter(
            torch.zeros(config.context_length, config.text_width)
        )
        self.blocks = nn.ModuleList(
            TransformerBlock(config.text_width, config.text_heads, config.mlp_ratio)
            for _ in range(config.text_layers)
        )
        self.ln_final = nn.LayerNorm(config.text_width)
        self.projection = nn.Parameter(torch.zeros(config.text_width, config.embed_dim))
        mask = torch.full((config.context_length, config.context_length), MASKED_SCORE)
        self.register_buffer("attn_mask", torch.triu(mask, diagonal=1))

    def forward(self, tokens: torch.Tensor, pool_weights: torch.Tensor) -> torch.Tensor:
        x = self.token_embedding(tokens) + self.positional_embedding
        for block in self.blocks:
            x = block(x, self.attn_mask)
        x = self.ln_final(x)
        pooled = (x * pool_weights.unsqueeze(-1)).sum(dim=1)
        return pooled @ self.projection


class ImageEncoder(nn.Module):
    """Patch transformer pooled at the class token."""

    def __init__(self, config: ClipConfig):
        super().__init__()
        self.config = config
        self.patch_embed = nn.Conv2d(
            3, config.vision_width, config.patch_size, stride=config.patch_size, bias=False
        )
        self.class_embedding = nn.Parameter(torch.zeros(config.vision_width))
        self.positional_embedding = nn.Parameter(
            torch.zeros(config.grid_positions, config.vision_width)
        )
        self.ln_pre = nn.LayerNorm(config.vision_width)
        self.blocks = nn.ModuleList(
            TransformerBlock(config.vision_width, config.vision_heads, config.mlp_ratio)
            for _ in range(config.vision_layers)
        )
        self.ln_post = nn.LayerNorm(config.vision_width)
        self.projection = nn.Parameter(torch.zeros(config.vision_width, config.embed_dim))

    def forward(self, pixels: torch.Tensor) -> torch.Tensor:
        x = self.patch_embed(pixels)  # [batch, width, side, side]
        x = x.reshape(x.shape[0], x.shape[1], -1).permute(0, 2, 1)
        cls = self.class_embedding.reshape(1, 1, -1).expand(x.shape[0], 1, -1)
        x = torch.cat([cls, x], dim=1) + self.positional_embedding
        x = self.ln_pre(x)
        for block in self.blocks:
            x = block(x)
        x = self.ln_post(x)
        return x[:, 0] @ self.projection


class Classifier(nn.Module):
    """Strided conv/batch-norm stack with pooled features and a softmax head.

    forward(pixels) returns (probs, features): class probabilities
    [batch, class_count] and the pooled representation [batch, feature_dim].
    """

    def __init__(self, config: ClassifierConfig):
        super().__init__()
        self.config = config
        convs = []
        norms = []
        channels_in = 3
        for channels_out in config.conv_channels:
            convs.append(nn.Conv2d(channels_in, channels_out, 3, stride=2, padding=1, bias=False))
            norms.append(nn.BatchNorm2d(channels_out))
            channels_in = channels_out
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)
        self.relu = nn.ReLU()
        self.fc = nn.Linear(config.feature_dim, config.class_count)

    def forward(self, pixels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = pixels
        for conv, norm in zip(self.convs, self.norms):
            x = self.relu(norm(conv(x)))
        features = torch.nn.functional.adaptive_avg_pool2d(x, 1).flatten(1)
        probs = torch.softmax(self.fc(features), dim=-1)
        return probs, features


def _fill_normal(gen: torch.Generator, tensor: torch.Tensor, std: float) -> None:
    with torch.no_grad():
        tensor.copy_(torch.randn(tensor.shape, generator=gen) * std)


def _seed_every_parameter(gen: torch.Generator, model: nn.Module) -> None:
    """Overwrite all parameters from the seeded generator so nothing keeps
    torch's per-process default init; normalization affines reset to 1/0.
    Structured fills for scale-sensitive tensors follow in the builders,
    and the small nonzero biases left here make bias-add paths observable."""
    for p in model.parameters():
        _fill_normal(gen, p, 0.01)
    for module in model.modules():
        if isinstance(module, (nn.LayerNorm, nn.BatchNorm2d)):
            with torch.no_grad():
                module.weight.fill_(1.0)
                module.bias.zero_()


def _init_transformer(gen: torch.Generator, blocks: nn.ModuleList, width: int) -> None:
    layers = len(blocks)
    attn_std = width**-0.5
    out_std = attn_std * (2 * layers) ** -0.5
    fc_std = (2 * width) ** -0.5
    for block in blocks:
        for linear in (block.attn.q_proj, block.attn.k_proj, block.attn.v_proj):
            _fill_normal(gen, linear.weight, attn_std)
        _fill_normal(gen, block.attn.out_proj.weight, out_std)
        _fill_normal(gen, block.fc1.weight, fc_std)
        _fill_normal(gen, block.fc2.weight, out_std)


def seeded_text_encoder(config: ClipConfig, seed: int) -> TextEncoder:
    gen = torch.Generator().manual_seed(seed)
    model = TextEncoder(config)
    _seed_every_parameter(gen, model)
    _fill_normal(gen, model.token_embedding.weight, 0.02)
    _fill_normal(gen, model.positional_embedding, 0.01)
    _init_transformer(gen, model.blocks, config.text_width)
    _fill_normal(gen, model.projection, config.text_width**-0.5)
    return model.eval()


def seeded_image_encoder(config: ClipConfig, seed: int) -> ImageEncoder:
    gen = torch.Generator().manual_seed(seed)
    model = ImageEncoder(config)
    _seed_every_parameter(gen, model)
    _fill_normal(gen, model.patch_embed.weight, 0.02)
    _fill_normal(gen, model.class_embedding, config.vision_width**-0.5)
    _fill_normal(gen, model.positional_embedding, 0.01)
    _init_transformer(gen, model.blocks, config.vision_width)
    _fill_normal(gen, model.projection, config.vision_width**-0.5)
    return model.eval()


def seeded_classifier(config: ClassifierConfig, seed: int) -> Classifier:
    gen = torch.Generator().manual_seed(seed)
    model = Classifier(config)
    _seed_every_parameter(gen, model)
    for conv in model.convs:
        fan_in = conv.in_channels * 9
        _fill_normal(gen, conv.weight, fan_in**-0.5)
    for norm in model.norms:
        # Randomized inference statistics so the exported batch-norm math is
        # exercised rather than collapsing to the identity affine map.
        with torch.no_grad():
            norm.weight.copy_(1.0 + 0.2 * torch.randn(norm.weight.shape, generator=gen))
            norm.bias.copy_(0.1 * torch.randn(norm.bias.shape, generator=gen))
            norm.running_mean.copy_(0.2 * torch.randn(norm.running_mean.shape, generator=gen))
            norm.running_var.copy_(0.5 + torch.rand(norm.running_var.shape, generator=gen))
    _fill_normal(gen, model.fc.weight, config.feature_dim**-0.5)
    return model.eval()
