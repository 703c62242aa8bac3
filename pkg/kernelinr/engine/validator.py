import numpy as np

from kernelinr.exceptions import InvalidInputError
from kernelinr.models.network import ConvLayer, LinearLayer, NetSpec
from kernelinr.models.report import ValidationResult, ValidationViolation
from kernelinr.models.weights import PermutationTable, WeightBundle

_KERNEL_SIDES = {1, 3}
_U16_MAX = 0xFFFF


def _validate_w01(bundle: WeightBundle) -> list[ValidationViolation]:
    """W01: at least one convolutional layer."""
    if bundle.layer_count == 0:
        return [ValidationViolation(rule_id="W01", message="Bundle has no layers")]
    return []


def _validate_w02(bundle: WeightBundle) -> list[ValidationViolation]:
    """W02: layers are 4-D [F, C, kh, kw] with F, C >= 1 and u16-sized."""
    violations: list[ValidationViolation] = []
    for idx, layer in enumerate(bundle.layers):
        if layer.ndim != 4:
            violations.append(
                ValidationViolation(
                    rule_id="W02",
                    message=f"Layer is {layer.ndim}-D, expected [F, C, kh, kw]",
                    layer=idx,
                )
            )
            continue
        f, c = layer.shape[:2]
        if f < 1 or c < 1 or f > _U16_MAX or c > _U16_MAX:
            violations.append(
                ValidationViolation(
                    rule_id="W02",
                    message=f"Filter/channel counts ({f}, {c}) outside [1, {_U16_MAX}]",
                    layer=idx,
                )
            )
    return violations


def _validate_w03(bundle: WeightBundle) -> list[ValidationViolation]:
    """W03: square kernels with side 1 or 3."""
    violations: list[ValidationViolation] = []
    for idx, layer in enumerate(bundle.layers):
        if layer.ndim != 4:
            continue
        kh, kw = layer.shape[2:]
        if kh != kw or kh not in _KERNEL_SIDES:
            violations.append(
                ValidationViolation(
                    rule_id="W03",
                    message=f"Kernel {kh}x{kw} is not square 1x1 or 3x3",
                    layer=idx,
                )
            )
    return violations


def _validate_w04(bundle: WeightBundle) -> list[ValidationViolation]:
    """W04: all kernel entries finite."""
    return [
        ValidationViolation(rule_id="W04", message="Layer has non-finite entries", layer=idx)
        for idx, layer in enumerate(bundle.layers)
        if not np.all(np.isfinite(layer))
    ]


def validate_bundle(bundle: WeightBundle) -> ValidationResult:
    """Run all structural rules on a weight bundle."""
    violations: list[ValidationViolation] = []
    violations.extend(_validate_w01(bundle))
    violations.extend(_validate_w02(bundle))
    violations.extend(_validate_w03(bundle))
    violations.extend(_validate_w04(bundle))
    return ValidationResult(valid=len(violations) == 0, violations=violations)


def _validate_p01(table: PermutationTable) -> list[ValidationViolation]:
    """P01: each perm is a bijection over its slots and inverses agree."""
    violations: list[ValidationViolation] = []
    if len(table.inverses) != table.layer_count:
        return [ValidationViolation(rule_id="P01", message="Perm/inverse layer counts differ")]
    for idx, (perm, inv) in enumerate(zip(table.perms, table.inverses)):
        n = perm.size
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(n)):
            violations.append(
                ValidationViolation(rule_id="P01", message="Permutation is not a bijection", layer=idx)
            )
            continue
        if inv.shape != perm.shape or not np.array_equal(inv[perm], np.arange(n)):
            violations.append(
                ValidationViolation(rule_id="P01", message="Inverse does not undo permutation", layer=idx)
            )
    return violations


def _validate_p02(table: PermutationTable, slot_counts: list[int]) -> list[ValidationViolation]:
    """P02: table layer count and slot counts match the target."""
    if table.layer_count != len(slot_counts):
        return [
            ValidationViolation(
                rule_id="P02",
                message=f"Table has {table.layer_count} layers, target has {len(slot_counts)}",
            )
        ]
    return [
        ValidationViolation(
            rule_id="P02",
            message=f"Table covers {have} slots, layer has {want}",
            layer=idx,
        )
        for idx, (have, want) in enumerate(zip(table.slot_counts, slot_counts))
        if have != want
    ]


def validate_table(
    table: PermutationTable, slot_counts: list[int] | None = None
) -> ValidationResult:
    """Check bijection rules and, when given, compatibility with per-layer slot counts."""
    violations = _validate_p01(table)
    if slot_counts is not None:
        violations.extend(_validate_p02(table, slot_counts))
    return ValidationResult(valid=len(violations) == 0, violations=violations)


def validate_binding(spec: NetSpec, bundle: WeightBundle) -> ValidationResult:
    """N01-N04: every bundle layer bound once, shapes chain, blobs exist and fit."""
    violations: list[ValidationViolation] = []
    bound: list[int] = []
    channels: int | None = None
    for pos, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayer):
            if layer.bundle_layer >= bundle.layer_count:
                violations.append(
                    ValidationViolation(
                        rule_id="N01",
                        message=f"Net layer {pos} binds missing bundle layer {layer.bundle_layer}",
                    )
                )
            else:
                want = (layer.filters, layer.channels, layer.kernel, layer.kernel)
                have = bundle.shapes[layer.bundle_layer]
                if have != want:
                    violations.append(
                        ValidationViolation(
                            rule_id="N03",
                            message=f"Net layer {pos} expects kernels {want}, bundle has {have}",
                            layer=layer.bundle_layer,
                        )
                    )
            bound.append(layer.bundle_layer)
            if channels is not None and layer.channels != channels:
                violations.append(
                    ValidationViolation(
                        rule_id="N03",
                        message=f"Net layer {pos} takes {layer.channels} channels, receives {channels}",
                    )
                )
            channels = layer.filters
            if layer.bias_blob is not None:
                violations.extend(_check_blob(bundle, layer.bias_blob, layer.filters, pos))
        elif isinstance(layer, LinearLayer):
            if channels is not None and layer.in_features != channels:
                violations.append(
                    ValidationViolation(
                        rule_id="N03",
                        message=f"Net layer {pos} takes {layer.in_features} features, receives {channels}",
                    )
                )
            channels = layer.out_features
            violations.extend(
                _check_blob(bundle, layer.weight_blob, layer.in_features * layer.out_features, pos)
            )
            if layer.bias_blob is not None:
                violations.extend(_check_blob(bundle, layer.bias_blob, layer.out_features, pos))

    if sorted(bound) != list(range(bundle.layer_count)):
        violations.append(
            ValidationViolation(
                rule_id="N02",
                message=f"Bundle layers must be bound exactly once, got {sorted(bound)}",
            )
        )
    return ValidationResult(valid=len(violations) == 0, violations=violations)


def _check_blob(
    bundle: WeightBundle, index: int, floats: int, pos: int
) -> list[ValidationViolation]:
    """N04: residual blob exists and holds exactly `floats` f32 values."""
    if index >= len(bundle.residuals):
        return [
            ValidationViolation(rule_id="N04", message=f"Net layer {pos} references missing blob {index}")
        ]
    if len(bundle.residuals[index]) != 4 * floats:
        return [
            ValidationViolation(
                rule_id="N04",
                message=f"Blob {index} holds {len(bundle.residuals[index])} bytes, expected {4 * floats}",
            )
        ]
    return []


def raise_if_invalid(result: ValidationResult, message: str) -> None:
    if not result.valid:
        details = "; ".join(v.message for v in result.violations)
        raise InvalidInputError(f"{message}: {details}", result.violations)
