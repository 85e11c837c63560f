"""Point d'entrée : python stereodc.py <commande> ...

Exemples :
    python stereodc.py encode left.ppm right.ppm out.dsc --lambda 0.01
    python stereodc.py decode out.dsc recon_l.ppm recon_r.ppm
    python stereodc.py sweep data/ --ablation --jobs 4
"""
from scripts.cli import main

if __name__ == "__main__":
    main()
