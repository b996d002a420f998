"""Central finite differences over every parameter of a float64 model."""

import torch


def numeric_grad(loss_fn, params, h=1e-6):
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + h
                up = loss_fn().item()
                flat[i] = old - h
                down = loss_fn().item()
                flat[i] = old
                gflat[i] = (up - down) / (2 * h)
            grads.append(g)
    return torch.cat([g.reshape(-1) for g in grads])


def analytic_grad(loss_fn, params):
    for p in params:
        p.grad = None
    loss_fn().backward()
    return torch.cat([(p.grad if p.grad is not None else torch.zeros_like(p)).reshape(-1) for p in params])


def relative_error(model, loss_fn):
    """||analytic - numeric|| / max(||analytic||, ||numeric||) over all trainable parameters."""
    params = [p for p in model.parameters() if p.requires_grad]
    a = analytic_grad(loss_fn, params)
    n = numeric_grad(loss_fn, params)
    denom = max(a.norm().item(), n.norm().item(), 1e-12)
    return (a - n).norm().item() / denom
