#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
ECDD 概念漂移检测工具 - 主启动脚本
用菜单的方式调用 ecdd_cli 的各个子命令
"""

import importlib
import os
import subprocess
import sys


REQUIRED_PACKAGES = {
    "numpy": "numpy",
    "scipy": "scipy",
    "pandas": "pandas",
    "joblib": "joblib",
    "psutil": "psutil",
}
TEST_PACKAGES = {
    "pytest": "pytest",
    "hypothesis": "hypothesis",
}


def check_dependencies(packages=None):
    """检查依赖是否安装，返回缺少的包名列表"""
    packages = REQUIRED_PACKAGES if packages is None else packages
    missing_deps = []
    for module, package in packages.items():
        try:
            importlib.import_module(module)
        except ImportError:
            missing_deps.append(package)
    return missing_deps


def show_menu():
    """显示主菜单"""
    print("\n" + "="*60)
    print("    ECDD 概念漂移检测工具")
    print("="*60)
    print()
    print("请选择操作:")
    print()
    print("1. 标定控制限查找表")
    print("   - lambda=0.2, ARL0=100/400/1000")
    print("   - 结果写入 [CALIBRATION] table_file")
    print()
    print("2. 运行预设实验")
    print("   - 例如 gauss200-lda-ecdd-arl600")
    print()
    print("3. 监控误差比特文件")
    print("   - 每行一个 0/1")
    print()
    print("4. 列出全部预设")
    print()
    print("5. 运行测试")
    print()
    print("6. 检查依赖")
    print()
    print("7. 退出")
    print()


def install_dependencies():
    """检查并可选地安装依赖"""
    print("\n检查依赖包...")
    missing_deps = check_dependencies()
    missing_test = check_dependencies(TEST_PACKAGES)

    if not missing_deps and not missing_test:
        print("✅ 所有依赖包都已安装！")
        return True

    missing = missing_deps + missing_test
    print(f"\n❌ 缺少以下依赖包: {', '.join(missing)}")
    print("\n安装建议:")
    print("   pip install -r requirements.txt")
    print()

    choice = input("是否现在尝试自动安装？(y/N): ")
    if not choice.lower().startswith('y'):
        return False
    try:
        print("\n正在安装依赖包...")
        result = subprocess.run([sys.executable, "-m", "pip", "install"] + missing,
                                capture_output=True, text=True)
    except OSError as e:
        print(f"❌ 安装过程中出错: {e}")
        return False
    if result.returncode == 0:
        print("✅ 依赖包安装成功！")
        return True
    print(f"❌ 安装失败: {result.stderr}")
    return False


def run_cli(argv):
    """调用命令行入口并报告退出码"""
    try:
        from ecdd_cli import main as cli_main
    except ImportError as e:
        print(f"❌ 无法导入 ecdd_cli: {e}")
        print("请先检查依赖（选项6）")
        return 1
    code = cli_main(argv)
    if code == 0:
        print("\n✅ 完成")
    else:
        print(f"\n❌ 退出码 {code}")
    return code


def run_preset():
    names = input("预设名字（多个用空格分隔，回车运行 gauss200-lda-ecdd-arl600）: ").split()
    names = names or ["gauss200-lda-ecdd-arl600"]
    reps = input("重复次数（回车使用配置文件的值）: ").strip()
    argv = ["bench"] + names
    if reps:
        argv += ["--replications", reps]
    return run_cli(argv)


def run_monitor():
    path = input("误差比特文件路径: ").strip()
    if not path or not os.path.exists(path):
        print(f"❌ 文件不存在: {path}")
        return 1
    return run_cli(["monitor", "--input", path])


def run_tests():
    """运行测试"""
    missing = check_dependencies(TEST_PACKAGES)
    if missing:
        print(f"❌ 缺少测试依赖: {', '.join(missing)}")
        return 1
    print("\n启动测试...")
    return subprocess.run([sys.executable, "-m", "pytest", "-q"]).returncode


def main():
    """主函数"""
    while True:
        try:
            show_menu()
            choice = input("请输入选项 (1-7): ").strip()

            if choice in ("1", "2", "3", "4") and check_dependencies():
                print(f"\n❌ 缺少依赖包: {', '.join(check_dependencies())}")
                print("请先安装依赖包（选项6）")
                input("按Enter键继续...")
                continue

            if choice == "1":
                run_cli(["calibrate", "--arl0", "100", "400", "1000"])
            elif choice == "2":
                run_preset()
            elif choice == "3":
                run_monitor()
            elif choice == "4":
                run_cli(["presets"])
            elif choice == "5":
                run_tests()
            elif choice == "6":
                install_dependencies()
            elif choice == "7":
                print("\n感谢使用！再见！")
                return 0
            else:
                print("❌ 无效选项，请重新输入")
                continue

            input("\n按Enter键返回主菜单...")

        except KeyboardInterrupt:
            print("\n\n👋 再见！")
            return 0
        except EOFError:
            return 0


if __name__ == "__main__":
    sys.exit(main())
