#!/usr/bin/env python3
"""
System Capabilities Detection Script
Records CPU and memory capabilities and the grid budget lab runs should respect.
"""

import json
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent / "src"))

from constrank.core.system import detect_system_capabilities, determine_run_profile


def save_profile(system_info, profile, output_dir):
    """Save system detection results and the derived run profile"""
    output_dir = Path(output_dir)
    output_dir.mkdir(exist_ok=True)

    with open(output_dir / 'system_info.json', 'w') as f:
        json.dump({**system_info, 'run_profile': profile}, f, indent=2)


def print_summary(system_info, profile):
    """Print system detection summary"""
    print("\n" + "=" * 60)
    print("SYSTEM CAPABILITIES DETECTION SUMMARY")
    print("=" * 60)

    print("\nSYSTEM INFO:")
    print(f"   Platform: {system_info['platform']} {system_info['platform_release']}")
    print(f"   CPU Cores: {system_info['cpu_cores']} ({system_info['cpu_cores_physical']} physical)")
    print(f"   Total RAM: {system_info['total_ram_gb']} GB")
    print(f"   Available RAM: {system_info['available_ram_gb']} GB")

    print("\nRUN PROFILE:")
    print(f"   Grid budget: {profile['max_grid_points']} points")
    print(f"   Largest cube: {profile['largest_cube_side']}^3")
    print(f"   Threads: {profile['threads']}")

    if profile['recommendations']:
        print("\nRECOMMENDATIONS:")
        for rec in profile['recommendations']:
            print(f"   - {rec}")

    print("\nSystem info saved to: ./config/system_info.json")
    print("=" * 60)


def main():
    """Main function"""
    print("Detecting system capabilities...")
    system_info = detect_system_capabilities()
    profile = determine_run_profile(system_info)
    save_profile(system_info, profile, Path(__file__).parent.parent / 'config')
    print_summary(system_info, profile)
    return system_info, profile


if __name__ == "__main__":
    main()
