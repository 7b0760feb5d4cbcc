"""
dinsys

Solver y banco de verificación para inclusiones de evolución de segundo orden
doblemente no lineales  u'' + ∂Ψ(u') + ∂E_t(u) + B(t,u,u') ∋ f.

Características principales:
- Esquema variacional semi-implícito (un problema de minimización por paso)
- Conjugadas convexas cerradas y numéricas, convolución ínfima
- Auditoría de la desigualdad discreta de energía-disipación
- Problemas de ejemplo P1-P4 y oscilador de calibración
- CLI con barridos de convergencia en paralelo
"""

__version__ = "0.1.0"
__author__ = "Pedro Hernandez Lerma"
